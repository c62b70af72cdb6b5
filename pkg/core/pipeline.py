"""
Pipeline - Configuration INI, enchaînement des étapes et manifeste d'exécution

    solve -> flatten-chart -> transform -> reflect -> carleman-sweep -> doubling

Chaque étape relit ses entrées dans le dossier de sortie, ce qui permet de lancer une
étape seule depuis la CLI. Une étape déjà terminée avec la même configuration et des
sorties intactes (sha256) n'est pas recalculée, sauf avec --force.
"""
import configparser
import logging
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import scipy
import sympy

from config.settings import (CARLEMAN_CONFIG, CHART_CONFIG, DOUBLING_CONFIG, PIPELINE_CONFIG,
                             RESULTS_DIR, SOLVER_CONFIG, TRANSFORM_CONFIG, export_config_summary)
from core import __version__
from core.carleman import CarlemanSweep, cutoff_test_function, make_family, sweep
from core.conformal import ConformalChart, build_chart, laplacian_pullback_check, pullback, verify_bounds
from core.doubling import (check_doubling_form, fit_doubling_constants, measure_masses,
                           optimize_tau_to_doubling, quasi_doubling_check)
from core.errors import (ChartError, ConfigValidationError, NumericalStageError, PlateDoublingError,
                         ReportMissingError)
from core.expressions import Expression
from core.flatten import (assemble_flattened_operator, boundary_residuals_flattened,
                          gamma_coefficient, to_v)
from core.geometry import BoundaryProfile, DomainChart
from core.grid_field import GridField
from core.material import LameField, PlateConstants, derive_plate_constants, stiffness_tensor
from core.plate_solver import PlateProblem, domain_for, refinement_study, solve
from core.reflect import compute_source, reflect, verify_extension
from core.reports import (read_csv, read_json, sha256_file, sha256_json, write_csv, write_json,
                          write_plot_data)

logger = logging.getLogger(__name__)

STAGES = tuple(PIPELINE_CONFIG['stages'])
REQUIRED = object()
REFINEMENT_COLUMNS = ('resolution', 'h', 'error_max', 'interior_residual', 'order')
QUASI_COLUMNS = ('tau', 'C_min', 'slack', 'feasible', 'constant')

# bloc -> clé -> (type, défaut)
CONFIG_SCHEMA: Dict[str, Dict[str, tuple]] = {
    'material': {
        'lambda': ('expr', REQUIRED),
        'mu': ('expr', REQUIRED),
        'thickness': ('float', REQUIRED),
        'alpha0': ('float', None),
        'gamma0': ('float', None),
        'lambda0': ('float', None),
    },
    'boundary': {
        'g': ('expr', REQUIRED),
        'r0': ('float', 1.0),
        'm0': ('float', 1.0),
        'alpha': ('float', 0.5),
    },
    'solution': {
        'boundary_data': ('expr', REQUIRED),
        'source': ('expr', None),
        'exact': ('expr', None),
    },
    'grid': {
        'resolution': ('int', SOLVER_CONFIG['default_resolution']),
        'refinement': ('int_list', []),
    },
    'chart': {
        'method': ('str', CHART_CONFIG['method']),
        'r1': ('float', None),
    },
    'carleman': {
        'family_size': ('int', CARLEMAN_CONFIG['family_size']),
        'r_in': ('float', 0.3),
        'r_out': ('float', 0.7),
        'seed': ('int', 0),
        'resolution': ('int', CARLEMAN_CONFIG['resolution']),
        'taus': ('float_list', CARLEMAN_CONFIG['taus']),
        'radii': ('float_list', CARLEMAN_CONFIG['radii']),
        'cutoff_inner': ('float', 0.3),
        'cutoff_outer': ('float', 0.8),
    },
    'doubling': {
        'center': ('float', 0.0),
        'radii': ('float_list', [0.025, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4]),
        'c': ('float', DOUBLING_CONFIG['frequency_C']),
        'r0': ('float', None),
        'quasi_radii': ('float_list', [0.05, 0.2, 0.8]),
        'quasi_c': ('float', DOUBLING_CONFIG['quasi_C']),
    },
    'output': {
        'directory': ('str', None),
    },
}
REQUIRED_BLOCKS = ('material', 'boundary', 'solution', 'grid')


def _is_power_of_two_plus_one(n: int) -> bool:
    m = n - 1
    return m > 0 and (m & (m - 1)) == 0


# === CONFIGURATION ===

@dataclass
class PipelineConfig:
    """Blocs nommés du fichier INI, valeurs converties et validées"""
    sections: Dict[str, Dict[str, Any]]
    raw: Dict[str, Dict[str, str]]
    source: Optional[Path] = None

    def __getitem__(self, block: str) -> Dict[str, Any]:
        return self.sections[block]

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> 'PipelineConfig':
        path = Path(path)
        if not path.exists():
            raise ConfigValidationError(f"Configuration file not found: {path}")
        config = cls.from_string(path.read_text(encoding='utf-8'))
        config.source = path
        return config

    @classmethod
    def from_string(cls, text: str) -> 'PipelineConfig':
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#', ';'))
        try:
            parser.read_string(text)
        except configparser.Error as e:
            raise ConfigValidationError(f"Malformed configuration: {e}") from e
        raw = {name: dict(parser[name]) for name in parser.sections()}
        return cls(_validate(raw), raw)

    def with_resolution(self, resolution: int) -> 'PipelineConfig':
        raw = {block: dict(values) for block, values in self.raw.items()}
        raw['grid']['resolution'] = str(int(resolution))
        return PipelineConfig(_validate(raw), raw, self.source)

    @property
    def config_hash(self) -> str:
        """Empreinte des blocs de calcul (le dossier de sortie n'en fait pas partie)"""
        return sha256_json({k: v for k, v in self.raw.items() if k != 'output'})

    @property
    def output_dir(self) -> Path:
        directory = self.sections['output']['directory']
        return Path(directory) if directory else RESULTS_DIR / 'run'


def _convert(block: str, key: str, kind: str, text: str):
    try:
        if kind == 'expr':
            Expression(text)
            return text
        if kind == 'float':
            return float(text)
        if kind == 'int':
            return int(text)
        if kind == 'str':
            return text.strip()
        items = [item.strip() for item in text.replace(';', ',').split(',') if item.strip()]
        return [int(i) for i in items] if kind == 'int_list' else [float(i) for i in items]
    except ValueError as e:
        raise ConfigValidationError(f"[{block}] {key}: cannot read '{text}' as {kind}") from e


def _validate(raw: Dict[str, Dict[str, str]]) -> Dict[str, Dict[str, Any]]:
    """Blocs présents, clés connues, types, puis contraintes croisées"""
    for block in REQUIRED_BLOCKS:
        if block not in raw:
            raise ConfigValidationError(f"Missing [{block}] block in configuration")
    unknown_blocks = sorted(set(raw) - set(CONFIG_SCHEMA))
    if unknown_blocks:
        raise ConfigValidationError(f"Unknown configuration blocks: {unknown_blocks}")

    sections: Dict[str, Dict[str, Any]] = {}
    for block, schema in CONFIG_SCHEMA.items():
        values = raw.get(block, {})
        unknown = sorted(set(values) - set(schema))
        if unknown:
            raise ConfigValidationError(f"[{block}] unknown keys {unknown}")
        parsed = {}
        for key, (kind, default) in schema.items():
            if key in values:
                parsed[key] = _convert(block, key, kind, values[key])
            elif default is REQUIRED:
                raise ConfigValidationError(f"[{block}] missing required key '{key}'")
            else:
                parsed[key] = list(default) if isinstance(default, list) else default
        sections[block] = parsed

    resolution = sections['grid']['resolution']
    if resolution < 17 or resolution % 2 == 0:
        raise ConfigValidationError(f"[grid] resolution must be odd and >= 17, got {resolution}")
    bad = [n for n in sections['grid']['refinement'] if not _is_power_of_two_plus_one(n) or n < 17]
    if bad:
        raise ConfigValidationError(f"[grid] refinement resolutions must be 2^k + 1 >= 17, got {bad}")
    if sections['material']['thickness'] <= 0:
        raise ConfigValidationError("[material] thickness must be positive")
    if sections['chart']['method'] not in ('polynomial', 'laplace'):
        raise ConfigValidationError(f"[chart] unknown method '{sections['chart']['method']}'")

    carleman = sections['carleman']
    if not 0.0 < carleman['r_in'] < carleman['r_out'] < 1.0:
        raise ConfigValidationError("[carleman] annulus must satisfy 0 < r_in < r_out < 1")
    if not 0.0 < carleman['cutoff_inner'] < carleman['cutoff_outer'] < 1.0:
        raise ConfigValidationError("[carleman] cut-off must satisfy 0 < inner < outer < 1")
    if carleman['family_size'] < 1 or not carleman['taus'] or min(carleman['taus']) < 1.0:
        raise ConfigValidationError("[carleman] needs family_size >= 1 and taus >= 1")
    if not carleman['radii'] or min(carleman['radii']) <= 0.0:
        raise ConfigValidationError("[carleman] radii must be positive")

    doubling = sections['doubling']
    if not doubling['radii'] or min(doubling['radii']) <= 0.0:
        raise ConfigValidationError("[doubling] radii must be a nonempty list of positive values")
    if doubling['c'] < 1.0:
        raise ConfigValidationError("[doubling] frequency constant C must be >= 1")
    quasi = doubling['quasi_radii']
    if len(quasi) != 3 or not 0.0 < 2.0 * quasi[0] < quasi[1] < quasi[2] / 2.0:
        raise ConfigValidationError("[doubling] quasi_radii must be r, r_bar, r_bar0 with "
                                    "0 < 2r < r_bar < r_bar0/2")
    return sections


# === MANIFESTE ===

@dataclass
class StageRecord:
    name: str
    status: str = 'not_run'       # 'passed', 'failed', 'not_run'
    residual: Optional[float] = None
    seconds: float = 0.0
    outputs: Dict[str, str] = field(default_factory=dict)
    summary: Dict = field(default_factory=dict)
    error: Optional[str] = None
    exit_code: int = 0

    def to_dict(self) -> Dict:
        return dict(vars(self))


@dataclass
class RunManifest:
    """Empreinte de la configuration, versions, état et sorties de chaque étape"""
    config_hash: str
    versions: Dict[str, str]
    stages: Dict[str, StageRecord]
    seeds: Dict[str, Any] = field(default_factory=dict)
    config_summary: Dict = field(default_factory=dict)

    @classmethod
    def new(cls, config: PipelineConfig) -> 'RunManifest':
        versions = {
            'platedoubling': __version__,
            'python': platform.python_version(),
            'numpy': np.__version__,
            'scipy': scipy.__version__,
            'sympy': sympy.__version__,
        }
        return cls(config.config_hash, versions, {name: StageRecord(name) for name in STAGES},
                   {}, {'config': config.raw, 'defaults': export_config_summary()})

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'RunManifest':
        data = read_json(path)
        stages = {name: StageRecord(**data['stages'].get(name, {'name': name})) for name in STAGES}
        return cls(data['config_hash'], data['versions'], stages, data.get('seeds', {}),
                   data.get('config_summary', {}))

    def save(self, path: Union[str, Path]) -> Path:
        return write_json(path, self.to_dict())

    @property
    def failed_stage(self) -> Optional[StageRecord]:
        return next((r for r in self.stages.values() if r.status == 'failed'), None)

    @property
    def exit_code(self) -> int:
        failed = self.failed_stage
        return failed.exit_code if failed else 0

    def to_dict(self) -> Dict:
        return {
            'config_hash': self.config_hash,
            'versions': self.versions,
            'stages': {name: self.stages[name].to_dict() for name in STAGES},
            'seeds': self.seeds,
            'config_summary': self.config_summary,
        }


@dataclass
class StageResult:
    outputs: List[Path]
    residual: Optional[float] = None
    summary: Dict = field(default_factory=dict)


# === ÉTAPES ===

class Pipeline:
    """Exécute les étapes dans l'ordre de dépendance et tient le manifeste à jour"""

    def __init__(self, config: PipelineConfig, out_dir: Optional[Union[str, Path]] = None,
                 force: bool = False):
        self.config = config
        self.out_dir = Path(out_dir) if out_dir else config.output_dir
        self.force = force
        self.manifest_path = self.out_dir / PIPELINE_CONFIG['manifest_name']
        self.manifest = self._load_manifest()
        self.stats = {
            'stages_run': 0,
            'stages_skipped': 0,
            'stages_failed': 0,
            'total_time': 0.0,
        }
        self._stage_methods: Dict[str, Callable[[], StageResult]] = {
            'solve': self.stage_solve,
            'flatten-chart': self.stage_flatten_chart,
            'transform': self.stage_transform,
            'reflect': self.stage_reflect,
            'carleman-sweep': self.stage_carleman_sweep,
            'doubling': self.stage_doubling,
        }
        self._cache: Dict[str, Any] = {}

    def _load_manifest(self) -> RunManifest:
        if self.manifest_path.exists():
            try:
                manifest = RunManifest.load(self.manifest_path)
                if manifest.config_hash == self.config.config_hash:
                    return manifest
                logger.info("Configuration changed since the last run: manifest reset")
            except (KeyError, TypeError, ValueError) as e:
                logger.warning(f"⚠️ Unreadable manifest {self.manifest_path}: {e}")
        return RunManifest.new(self.config)

    # --- exécution ---
    def is_current(self, name: str) -> bool:
        record = self.manifest.stages[name]
        if self.force or record.status != 'passed' or not record.outputs:
            return False
        for relative, digest in record.outputs.items():
            path = self.out_dir / relative
            if not path.exists() or sha256_file(path) != digest:
                return False
        return True

    def run(self, stages: Optional[Sequence[str]] = None) -> RunManifest:
        """Étapes demandées (toutes par défaut); un échec arrête les étapes en aval"""
        stages = list(stages or STAGES)
        unknown = [s for s in stages if s not in STAGES]
        if unknown:
            raise ConfigValidationError(f"Unknown stages {unknown}")
        self.out_dir.mkdir(parents=True, exist_ok=True)
        upstream_changed = False
        for name in STAGES:
            if name not in stages:
                continue
            if not upstream_changed and self.is_current(name):
                logger.info(f"Stage '{name}' up to date, skipped")
                self.stats['stages_skipped'] += 1
                continue
            if not self.run_stage(name):
                for downstream in STAGES[STAGES.index(name) + 1:]:
                    if downstream in stages:
                        record = self.manifest.stages[downstream]
                        record.status, record.outputs, record.error = 'not_run', {}, None
                break
            upstream_changed = True
        self.manifest.save(self.manifest_path)
        return self.manifest

    def run_stage(self, name: str) -> bool:
        record = StageRecord(name)
        start = time.perf_counter()
        logger.info(f"Running stage '{name}'")
        try:
            result = self._stage_methods[name]()
        except PlateDoublingError as e:
            record.status = 'failed'
            record.error = str(e)
            record.exit_code = e.exit_code
            record.residual = getattr(e, 'residual', None)
            self.stats['stages_failed'] += 1
            logger.error(f"❌ Stage '{name}' failed: {e}")
        else:
            record.status = 'passed'
            record.residual = result.residual
            record.summary = result.summary
            record.outputs = {str(p.relative_to(self.out_dir)): sha256_file(p)
                              for p in sorted(result.outputs)}
            self.stats['stages_run'] += 1
            logger.info(f"✅ Stage '{name}' passed ({len(record.outputs)} outputs)")
        record.seconds = time.perf_counter() - start
        self.stats['total_time'] += record.seconds
        self.manifest.stages[name] = record
        self.manifest.save(self.manifest_path)
        return record.status == 'passed'

    # --- entrées partagées ---
    def _path(self, name: str) -> Path:
        return self.out_dir / name

    def _require(self, name: str) -> Path:
        path = self._path(name)
        if not path.exists():
            raise ReportMissingError(f"Input '{name}' not found in {self.out_dir}; run the "
                                     f"upstream stage first")
        return path

    def profile(self) -> BoundaryProfile:
        b = self.config['boundary']
        return BoundaryProfile.from_text(b['g'], b['r0'], b['m0'], b['alpha'])

    def domain(self) -> DomainChart:
        if 'domain' not in self._cache:
            self._cache['domain'] = domain_for(self.profile(), self.config['grid']['resolution'])
        return self._cache['domain']

    def material(self, x: np.ndarray, y: np.ndarray, mask: Optional[np.ndarray] = None) -> PlateConstants:
        m = self.config['material']
        lam_expr, mu_expr = Expression(m['lambda']), Expression(m['mu'])
        xx, yy = np.meshgrid(x, y, indexing='ij')
        inside = mask if mask is not None else np.ones(xx.shape, bool)
        lam, mu = lam_expr(xx, yy)[inside], mu_expr(xx, yy)[inside]
        alpha0 = m['alpha0'] or max(0.5 * float(np.min(mu)), 1e-12)
        gamma0 = m['gamma0'] or max(0.5 * float(np.min(2 * mu + 3 * lam)), 1e-12)
        Lambda0 = m['lambda0'] or 10.0 * (float(np.max(np.abs(lam))) + float(np.max(np.abs(mu))) + 1.0)
        lame = LameField.from_expressions(m['lambda'], m['mu'], x, y, m['thickness'], alpha0,
                                          gamma0, Lambda0, mask, self.config['boundary']['r0'])
        return derive_plate_constants(lame)

    def problem(self, resolution: int) -> PlateProblem:
        s = self.config['solution']
        domain = domain_for(self.profile(), resolution)
        pc = self.material(domain.x1, domain.x2, domain.mask)
        source = Expression(s['source']) if s['source'] else None
        return PlateProblem(domain, stiffness_tensor(pc), Expression(s['boundary_data']), source)

    def _chart(self) -> ConformalChart:
        return ConformalChart.load(self._require('chart'))

    def _flattened(self, chart: ConformalChart, u_grid: GridField):
        pc = self.material(u_grid.x, u_grid.y, u_grid.mask)
        return pc, assemble_flattened_operator(chart, pc), gamma_coefficient(chart, pc)

    # --- étapes ---
    def stage_solve(self) -> StageResult:
        resolution = self.config['grid']['resolution']
        problem = self.problem(resolution)
        u, report = solve(problem)
        if not math.isfinite(report.interior_residual):
            raise NumericalStageError("Non-finite interior residual after solve", stage='solve',
                                      residual=report.interior_residual)
        outputs = [u.save(self._path('u.grid')),
                   report.computational.save(self._path('u_computational.grid'))]

        summary = {'resolution': resolution, **report.to_dict()}
        outputs.append(write_json(self._path('solve_report.json'), summary))

        refinement = self.config['grid']['refinement']
        exact = self.config['solution']['exact']
        if refinement and exact:
            rows = refinement_study(self.problem, Expression(exact), refinement)
        else:
            rows = []
            for n in refinement:
                _, r = solve(self.problem(n))
                rows.append({'resolution': n, 'h': 2.0 * self.config['boundary']['r0'] / (n - 1),
                             'error_max': math.nan, 'interior_residual': r.interior_residual,
                             'order': math.nan})
        outputs.append(write_csv(self._path('solve_refinement.csv'), REFINEMENT_COLUMNS,
                                 [[row[c] for c in REFINEMENT_COLUMNS] for row in rows]))
        return StageResult(outputs, report.interior_residual,
                           {'interior_residual': report.interior_residual,
                            'boundary_moment_residual': report.boundary_moment_residual})

    def stage_flatten_chart(self) -> StageResult:
        c = self.config['chart']
        chart = build_chart(self.profile(), self.config['grid']['resolution'], c['method'], c['r1'])
        bounds = verify_bounds(chart)
        identities = chart.identity_residuals()
        outputs = chart.save(self._path('chart'))
        outputs.append(write_json(self._path('chart_bounds.json'),
                                  {'bounds': bounds.to_dict(), 'diagnostics': chart.diagnostics,
                                   'identities': identities}))
        if not bounds.passed:
            raise ChartError(f"Chart bounds violated: {bounds.failures or ['containment']}",
                             stage='flatten-chart', residual=chart.diagnostics['cr_residual'])
        return StageResult(outputs, chart.diagnostics['cr_residual'],
                           {'K': chart.K, 'c0': chart.c0, 'C0': chart.C0, 'method': chart.method})

    def stage_transform(self) -> StageResult:
        u = GridField.load(self._require('u.grid'), name='u')
        chart = self._chart()
        w = pullback(u, chart, order=TRANSFORM_CONFIG['pullback_order'])
        _, op, twist = self._flattened(chart, u)
        v = to_v(w, twist)
        report = boundary_residuals_flattened(w, v, twist, op)
        report['laplacian_pullback'] = laplacian_pullback_check(u, w, chart)
        report['gamma_min'] = float(np.min(twist.gamma))
        report['gamma_max'] = float(np.max(twist.gamma))
        report['twist_trivial'] = twist.is_trivial
        report['coefficient_bounds'] = op.coefficient_bounds()
        outputs = [w.save(self._path('w.grid')), v.save(self._path('v.grid')),
                   write_json(self._path('transform_report.json'), report)]
        return StageResult(outputs, report['edge_equivalence'],
                           {'edge_equivalence': report['edge_equivalence'],
                            'laplacian_v_edge': report['laplacian_v_edge']})

    def stage_reflect(self) -> StageResult:
        v = GridField.load(self._require('v.grid'), name='v')
        u = GridField.load(self._require('u.grid'), name='u')
        transform = read_json(self._require('transform_report.json'))
        chart = self._chart()
        _, op, twist = self._flattened(chart, u)
        source = compute_source(v, twist, op)
        reflected = reflect(v, source, float(transform['v_edge']))
        report = verify_extension(reflected)
        report['snapped'] = reflected.snapped
        report['unsnapped'] = reflected.unsnapped
        if report['symmetry_defect'] != 0.0:
            raise NumericalStageError("Odd extension is not exactly antisymmetric", stage='reflect',
                                      residual=report['symmetry_defect'])
        outputs = [reflected.vbar.save(self._path('vbar.grid')),
                   reflected.fbar.save(self._path('fbar.grid')),
                   write_json(self._path('reflect_report.json'), report)]
        return StageResult(outputs, report['residual_l2'],
                           {'residual_l2': report['residual_l2'], 'jump_d2': report['jump_d2']})

    def stage_carleman_sweep(self) -> StageResult:
        c = self.config['carleman']
        vbar = GridField.load(self._require('vbar.grid'), name='vbar')
        family = make_family(c['r_in'], c['r_out'], c['family_size'], c['seed'], c['resolution'])
        family.append(cutoff_test_function(vbar, c['cutoff_inner'], c['cutoff_outer']))
        result: CarlemanSweep = sweep(family, c['taus'], c['radii'])
        self.manifest.seeds['carleman'] = {'base_seed': c['seed'], 'seeds': result.seeds}
        summary = result.summary()
        outputs = [result.write_csv(self._path('carleman.csv')),
                   write_json(self._path('carleman_summary.json'), summary)]
        return StageResult(outputs, None, {'C_emp': result.C_emp, 'tau_stable': result.tau_stable})

    def stage_doubling(self) -> StageResult:
        d = self.config['doubling']
        u = GridField.load(self._require('u.grid'), name='u')
        v = GridField.load(self._require('v.grid'), name='v')
        carleman = read_json(self._require('carleman_summary.json'))
        C_emp = float(carleman['C_emp'])

        profile = self.profile()
        P = (d['center'], float(profile(d['center'])))
        report = measure_masses(u, self.domain(), P, d['radii'], d['r0'], d['c'])
        q = quasi_doubling_check(v, tuple(d['quasi_radii']), self.config['carleman']['taus'],
                                 d['quasi_c'])
        N = report.N
        if N < 1.0:
            logger.warning(f"⚠️ Measured N = {N:.6g} < 1 (quadrature noise), clamped to 1")
            N = 1.0
        statement = optimize_tau_to_doubling(q, N)
        fit = fit_doubling_constants(report, C_emp)
        form = check_doubling_form(report, fit)

        quasi_rows = [(row['tau'], row['C_min'], s, row['feasible'], row['constant'])
                      for row, s in zip(statement.table, q.slack())]
        summary = {
            'N': report.N, 'C': report.C, 'kappa': report.kappa,
            'vanishing_order': report.vanishing_order, 'C_emp': C_emp, 'k': fit.k,
            'fit': fit.to_dict(), 'form': form, 'statement': statement.to_dict(),
            'quasi_doubling': q.to_dict(), 'masses': report.to_dict(),
        }
        outputs = [report.write_csv(self._path('doubling.csv')),
                   write_csv(self._path('quasi_doubling.csv'), QUASI_COLUMNS, quasi_rows),
                   write_json(self._path('doubling_summary.json'), summary)]
        return StageResult(outputs, None, {'N': report.N, 'kappa': report.kappa, 'k': fit.k,
                                           'form_passed': form['passed']})


def run_pipeline(config: PipelineConfig, out_dir: Optional[Union[str, Path]] = None,
                 force: bool = False, stages: Optional[Sequence[str]] = None) -> RunManifest:
    pipeline = Pipeline(config, out_dir, force)
    manifest = pipeline.run(stages)
    logger.info(f"Pipeline finished: {pipeline.stats['stages_run']} run, "
                f"{pipeline.stats['stages_skipped']} skipped, {pipeline.stats['stages_failed']} failed "
                f"in {pipeline.stats['total_time']:.1f}s")
    return manifest


# === FICHIERS DE TRACÉ ===

def emit_plot_data(report_dir: Union[str, Path],
                   output_dir: Optional[Union[str, Path]] = None) -> Dict[str, Path]:
    """
    mass_curve.dat (log s, log m), ratio_vs_tau.dat (tau, max du rapport par r) et
    residual_vs_resolution.dat (résolution, résidus)

    Raises:
        ReportMissingError: rapport absent (fichier nommé)
    """
    report_dir = Path(report_dir)
    output_dir = Path(output_dir) if output_dir else report_dir
    written: Dict[str, Path] = {}

    doubling_rows = read_csv(report_dir / 'doubling.csv')
    mass_rows = [(math.log(row['radius']), math.log(row['mass']))
                 for row in doubling_rows if float(row['mass']) > 0.0]
    written['mass_curve'] = write_plot_data(output_dir / 'mass_curve.dat', ('log_s', 'log_m'),
                                            mass_rows)

    carleman_rows = read_csv(report_dir / 'carleman.csv')
    radii = sorted({float(row['r']) for row in carleman_rows})
    taus = sorted({float(row['tau']) for row in carleman_rows})
    table = []
    for tau in taus:
        line = [tau]
        for r in radii:
            ratios = [float(row['ratio']) for row in carleman_rows
                      if float(row['tau']) == tau and float(row['r']) == r
                      and math.isfinite(float(row['ratio']))]
            line.append(max(ratios) if ratios else math.nan)
        table.append(line)
    written['ratio_vs_tau'] = write_plot_data(output_dir / 'ratio_vs_tau.dat',
                                              ['tau'] + [f'ratio_r{r:g}' for r in radii], table)

    refinement_rows = read_csv(report_dir / 'solve_refinement.csv')
    written['residual_vs_resolution'] = write_plot_data(
        output_dir / 'residual_vs_resolution.dat',
        ('resolution', 'interior_residual', 'error_max'),
        [(row['resolution'], row['interior_residual'], row['error_max']) for row in refinement_rows],
    )
    logger.info(f"✅ Plot data written to {output_dir}")
    return written
