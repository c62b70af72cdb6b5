"""
PlateDoubling - Interface en ligne de commande
Résolution de la plaque appuyée, aplatissement conforme, réflexion, balayage de Carleman
et mesure du doublement au bord

    python main.py pipeline --config config/example_pipeline.ini --out results/run
    python main.py plot-data --out results/run --figures
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from config.settings import EXAMPLE_CONFIG, LOGS_DIR, get_config_for_environment
from core.errors import PlateDoublingError
from core.pipeline import STAGES, PipelineConfig, emit_plot_data, run_pipeline

logger = logging.getLogger(__name__)


def setup_logging(verbose: bool = False):
    """FileHandler dans logs/ et StreamHandler, comme pour toute la chaîne"""
    config = get_config_for_environment()['logging']
    handlers: List[logging.Handler] = []
    if config['log_to_file']:
        try:
            LOGS_DIR.mkdir(parents=True, exist_ok=True)
            handlers.append(logging.FileHandler(LOGS_DIR / config['log_file'], encoding='utf-8'))
        except OSError as e:
            print(f"⚠️ Log file unavailable: {e}")
    if config['log_to_console']:
        handlers.append(logging.StreamHandler())
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, config['level']),
        format=config['format'],
        handlers=handlers or [logging.NullHandler()],
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='platedoubling',
        description="Boundary doubling for supported Kirchhoff-Love plates: numerical pipeline",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument('-v', '--verbose', action='store_true', help="DEBUG logging")
    subparsers = parser.add_subparsers(dest='command', required=True)

    def add_common(sub):
        sub.add_argument('--config', type=Path, default=EXAMPLE_CONFIG,
                         help="INI configuration file")
        sub.add_argument('--out', type=Path, default=None,
                         help="Output directory (overrides [output] directory)")
        sub.add_argument('--force', action='store_true', help="Recompute even when up to date")
        sub.add_argument('--resolution', type=int, default=None,
                         help="Override [grid] resolution")

    for stage in STAGES:
        add_common(subparsers.add_parser(stage, help=f"Run the '{stage}' stage only"))
    add_common(subparsers.add_parser('pipeline', help="Run every stage in dependency order"))

    plot = subparsers.add_parser('plot-data', help="Write (x, y) column files from the reports")
    plot.add_argument('--out', type=Path, required=True, help="Directory holding the reports")
    plot.add_argument('--target', type=Path, default=None,
                      help="Directory for the plot-data files (default: --out)")
    plot.add_argument('--figures', action='store_true', help="Also render PNG figures")

    parser.epilog = """
Stages:
  solve           supported plate problem on Omega_r0         -> u.grid, solve_report.json
  flatten-chart   conformal chart Phi and its bounds            -> chart/, chart_bounds.json
  transform       w = u o Phi, twist v = w / a                  -> w.grid, v.grid
  reflect         source f, odd extension vbar, fbar            -> vbar.grid, reflect_report.json
  carleman-sweep  weighted estimate over seeded test functions  -> carleman.csv
  doubling        masses, frequency, quasi-doubling, fit        -> doubling.csv, doubling_summary.json

Exit codes: 0 success, 2 validation error, 3 numerical-stage failure.
"""
    return parser


def run_command(args: argparse.Namespace) -> int:
    if args.command == 'plot-data':
        written = emit_plot_data(args.out, args.target)
        for key, path in written.items():
            print(f"✅ {key}: {path}")
        if args.figures:
            from core.visualization import FigureRenderer
            for figure in FigureRenderer().render_all(args.target or args.out):
                print(f"🖼️ {figure}")
        return 0

    config = PipelineConfig.from_file(args.config)
    if args.resolution is not None:
        config = config.with_resolution(args.resolution)
    stages = None if args.command == 'pipeline' else [args.command]
    manifest = run_pipeline(config, args.out, args.force, stages)

    for name in stages or STAGES:
        record = manifest.stages[name]
        marker = {'passed': '✅', 'failed': '❌'}.get(record.status, '⏭️')
        line = f"{marker} {name}: {record.status}"
        if record.error:
            line += f" ({record.error})"
        print(line)
    return manifest.exit_code


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    try:
        return run_command(args)
    except PlateDoublingError as e:
        logger.error(f"❌ {e}")
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
