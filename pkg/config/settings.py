"""
Configuration centrale pour PlateDoubling
Paramètres numériques, tolérances et chemins de sortie
"""
from pathlib import Path
import os

from dotenv import load_dotenv

# === CHEMINS PRINCIPAUX ===
# Dossier racine du projet
PROJECT_ROOT = Path(__file__).parent.parent

load_dotenv(PROJECT_ROOT / ".env")

# Dossiers de sortie
DATA_DIR = PROJECT_ROOT / "data"
RESULTS_DIR = Path(os.getenv("PLATE_DOUBLING_RESULTS", PROJECT_ROOT / "results"))
LOGS_DIR = PROJECT_ROOT / "logs"
EXPORTS_DIR = RESULTS_DIR / "exports"

EXAMPLE_CONFIG = PROJECT_ROOT / "config" / "example_pipeline.ini"

# === CONFIGURATION MATÉRIAU ===
MATERIAL_CONFIG = {
    'dual_b_rtol': 1e-12,          # accord entre les deux formules de B
    'degeneracy_ratio': 1e-14,     # B < ratio * max(B) -> dégénérescence
    'fd_accuracy': 2,              # différences finies si pas d'expression exacte
    'q2_reading': 'literal'        # 'literal' ou 'exact'
}

# === CONFIGURATION GÉOMÉTRIE ===
GEOMETRY_CONFIG = {
    'origin_tolerance': 1e-10,
    'min_resolution': 16,
    'coarse_scale_divisor': 8,     # échelle r0/8 de la semi-norme de Hölder
    'quadrature_order': 4,         # points de Gauss par cellule de grille
    'cut_cell_refinement': 8,      # sous-division des cellules coupées
    'chunk_size': 256              # colonnes évaluées par bloc
}

# === CONFIGURATION SOLVEUR ===
SOLVER_CONFIG = {
    'default_resolution': 65,
    'clamped_layers': 2,
    'max_nodes': 257 * 257,
    'symmetry_tolerance': 1e-10,
    'refinement_resolutions': [33, 65, 129]
}

# === CONFIGURATION CARTE CONFORME ===
CHART_CONFIG = {
    'method': 'polynomial',        # 'polynomial' ou 'laplace'
    'r1_ratio': 0.25,              # r1 = r1_ratio * r0
    'cr_tolerance_factor': 1e-6,   # tol_cr = facteur * max|DPhi|
    'boundary_tolerance': 1e-6,
    'origin_tolerance': 1e-10,
    'newton_tolerance': 1e-10,
    'newton_max_iter': 60,
    'chebyshev_max_degree': 512,
    'chebyshev_tolerance': 1e-15,
    'laplace_max_iter': 40,
    'laplace_tolerance': 1e-12,
    'containment_samples': 48,     # rayons x angles pour le test d'inclusion
    'degenerate_threshold': 1e-12
}

# === CONFIGURATION TRANSFORMATION ===
TRANSFORM_CONFIG = {
    'pullback_order': 5,           # splines quintiques pour les résidus d'ordre 4
    'fd_accuracy': 4,
    'edge_accuracy': 2,            # dérivée unilatérale à 3 points sur le bord
    'interior_margin': 4           # couches exclues des résidus intérieurs
}

# === CONFIGURATION RÉFLEXION ===
REFLECT_CONFIG = {
    'snap_factor': 10.0,
    'snap_floor': 1e-12,
    'max_radius': 0.9,
    'annulus_width': 0.1,
    'band_layers': 3,
    'fd_accuracy': 2
}

# === CONFIGURATION CARLEMAN ===
CARLEMAN_CONFIG = {
    'fd_accuracy': 6,
    'resolution': 257,
    'harmonics': 3,
    'stabilization_tolerance': 0.05,
    'taus': [2, 5, 10, 20, 50],
    'radii': [0.4, 0.8],
    'family_size': 20
}

# === CONFIGURATION DOUBLING ===
DOUBLING_CONFIG = {
    'frequency_C': 4.0,
    'tau_tolerance': 0.05,
    'quasi_C': 10.0,
    'form_slack': 1e-9
}

# === CONFIGURATION PIPELINE ===
PIPELINE_CONFIG = {
    'stages': ['solve', 'flatten-chart', 'transform', 'reflect', 'carleman-sweep', 'doubling'],
    'manifest_name': 'manifest.json',
    'float_format': '%.17g'
}

# === CONFIGURATION LOGGING ===
LOGGING_CONFIG = {
    'level': 'INFO',
    'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    'log_to_file': True,
    'log_to_console': True,
    'log_file': 'platedoubling.log'
}

# === FONCTIONS UTILITAIRES ===
def ensure_directories():
    """Crée tous les dossiers nécessaires"""
    directories = [DATA_DIR, RESULTS_DIR, LOGS_DIR, EXPORTS_DIR]

    for directory in directories:
        directory.mkdir(parents=True, exist_ok=True)

def validate_environment():
    """Valide l'environnement de calcul"""
    import sys

    validation_results = {
        'python_version_ok': sys.version_info >= (3, 9),
        'directories_exist': True,
        'dependencies_ok': True
    }

    try:
        ensure_directories()
    except Exception as e:
        validation_results['directories_exist'] = False
        validation_results['directory_error'] = str(e)

    critical_deps = ['numpy', 'scipy', 'sympy', 'matplotlib', 'tqdm']
    missing_deps = []

    for dep in critical_deps:
        try:
            __import__(dep)
        except ImportError:
            missing_deps.append(dep)

    if missing_deps:
        validation_results['dependencies_ok'] = False
        validation_results['missing_dependencies'] = missing_deps

    return validation_results

# === CONFIGURATION PAR ENVIRONNEMENT ===
ENVIRONMENT_OVERRIDES = {
    'development': {
        'logging': {'level': 'DEBUG'}
    },
    'testing': {
        # Grilles réduites pour les tests rapides
        'logging': {'level': 'WARNING', 'log_to_file': False},
        'solver': {'default_resolution': 33},
        'carleman': {'resolution': 129}
    },
    'production': {
        'logging': {'level': 'INFO'}
    }
}

_CONFIG_BLOCKS = {
    'material': MATERIAL_CONFIG,
    'geometry': GEOMETRY_CONFIG,
    'solver': SOLVER_CONFIG,
    'chart': CHART_CONFIG,
    'transform': TRANSFORM_CONFIG,
    'reflect': REFLECT_CONFIG,
    'carleman': CARLEMAN_CONFIG,
    'doubling': DOUBLING_CONFIG,
    'pipeline': PIPELINE_CONFIG,
    'logging': LOGGING_CONFIG
}
_BASE_CONFIG = {name: dict(block) for name, block in _CONFIG_BLOCKS.items()}

def get_config_for_environment(env=None):
    """Retourne la configuration selon l'environnement"""
    env = env or os.getenv('PLATE_DOUBLING_ENV', 'production')
    overrides = ENVIRONMENT_OVERRIDES.get(env, ENVIRONMENT_OVERRIDES['production'])

    config = {name: {**block, **overrides.get(name, {})} for name, block in _BASE_CONFIG.items()}
    config['environment'] = env
    return config

def apply_environment(env=None):
    """Recopie la configuration de l'environnement dans les dictionnaires du module"""
    config = get_config_for_environment(env)
    for name, block in _CONFIG_BLOCKS.items():
        block.clear()
        block.update(config[name])
    return config['environment']

def export_config_summary():
    """Résumé sérialisable de la configuration (stocké dans le manifeste)"""
    return {
        'material': MATERIAL_CONFIG,
        'geometry': GEOMETRY_CONFIG,
        'solver': SOLVER_CONFIG,
        'chart': CHART_CONFIG,
        'transform': TRANSFORM_CONFIG,
        'reflect': REFLECT_CONFIG,
        'carleman': CARLEMAN_CONFIG,
        'doubling': DOUBLING_CONFIG
    }

ENVIRONMENT = apply_environment()
