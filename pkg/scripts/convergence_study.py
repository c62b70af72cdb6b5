"""
Étude de convergence: erreur du solveur sur des solutions manufacturées et résidu
||Delta^2 vbar - fbar|| de l'extension impaire sur une suite de résolutions 2^k + 1
"""
import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Dict, List, Sequence

# Ajouter le dossier parent au path pour les imports
sys.path.append(str(Path(__file__).parent.parent))

from config.settings import EXPORTS_DIR, SOLVER_CONFIG, TRANSFORM_CONFIG  # noqa: E402
from core.conformal import build_chart, pullback  # noqa: E402
from core.expressions import Expression  # noqa: E402
from core.flatten import assemble_flattened_operator, gamma_coefficient, to_v  # noqa: E402
from core.geometry import BoundaryProfile  # noqa: E402
from core.material import LameField, derive_plate_constants, stiffness_tensor  # noqa: E402
from core.plate_solver import PlateProblem, domain_for, refinement_study, solve  # noqa: E402
from core.reflect import compute_source, reflect, verify_extension  # noqa: E402
from core.reports import write_csv  # noqa: E402

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# solutions biharmoniques non polynomiales, nulles avec moment normal nul sur le bord plat
SOLUTIONS = {'harmonic': 'sin(x1)*(exp(x2) - exp(-x2))/2', 'biharmonic': 'x2*exp(x1)*cos(x2)'}


class ConvergenceStudy:
    def __init__(self, profile_text: str = '0', lam: float = 1.0, mu: float = 2.0,
                 thickness: float = 0.1):
        self.profile = BoundaryProfile.from_text(profile_text)
        self.lam, self.mu, self.thickness = lam, mu, thickness

    def problem(self, resolution: int, data: str) -> PlateProblem:
        domain = domain_for(self.profile, resolution)
        lame = LameField.constant(self.lam, self.mu, self.thickness)
        pc = derive_plate_constants(lame)
        return PlateProblem(domain, stiffness_tensor(pc), Expression(data))

    def solver_rows(self, resolutions: Sequence[int]) -> List[Dict]:
        rows = []
        for name, text in SOLUTIONS.items():
            study = refinement_study(lambda n: self.problem(n, text), Expression(text), resolutions)
            rows.extend({'case': f'solver_{name}', **row} for row in study)
        return rows

    def reflection_rows(self, resolutions: Sequence[int], data: str = '2*x1*x2') -> List[Dict]:
        rows: List[Dict] = []
        for n in resolutions:
            problem = self.problem(n, data)
            u, report = solve(problem)
            chart = build_chart(self.profile, n)
            w = pullback(u, chart, order=TRANSFORM_CONFIG['pullback_order'])
            pc = problem.constants
            op = assemble_flattened_operator(chart, pc)
            twist = gamma_coefficient(chart, pc)
            v = to_v(w, twist)
            reflected = reflect(v, compute_source(v, twist, op), report.boundary_value_residual)
            residual = verify_extension(reflected)['residual_l2']
            row = {'case': 'reflection', 'resolution': n, 'h': w.hx, 'error_max': residual,
                   'interior_residual': report.interior_residual, 'order': math.nan}
            if rows and residual > 0 and rows[-1]['error_max'] > 0:
                row['order'] = math.log(rows[-1]['error_max'] / residual) / math.log(rows[-1]['h'] / w.hx)
            rows.append(row)
            logger.info(f"Reflection n={n}: residual {residual:.3e}, order {row['order']:.2f}")
        return rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Refinement study of the solver and the reflection")
    parser.add_argument('--resolutions', type=int, nargs='+',
                        default=SOLVER_CONFIG['refinement_resolutions'])
    parser.add_argument('--profile', default='0', help="Boundary profile g(x1)")
    parser.add_argument('--output', type=Path, default=EXPORTS_DIR / 'convergence.csv')
    args = parser.parse_args(argv)

    study = ConvergenceStudy(args.profile)
    rows = study.solver_rows(args.resolutions) + study.reflection_rows(args.resolutions)
    columns = ('case', 'resolution', 'h', 'error_max', 'interior_residual', 'order')
    write_csv(args.output, columns, [[row[c] for c in columns] for row in rows])

    print("📊 Convergence study")
    for row in rows:
        print(f"  {row['case']:<12} n={row['resolution']:<4} err={row['error_max']:.3e} "
              f"order={row['order']:.2f}")
    print(f"✅ Written to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
