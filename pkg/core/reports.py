"""
Reports - Écriture et lecture des rapports JSON / CSV, empreintes sha256
Les flottants des CSV sont écrits en %.17g pour que deux exécutions identiques
produisent des fichiers identiques octet par octet
"""
import csv
import hashlib
import json
import logging
import math
import warnings
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from config.settings import PIPELINE_CONFIG
from core.errors import ReportMissingError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def to_serializable(obj):
    """Conversion des types numpy / Path pour json.dump"""
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, 'to_dict'):
        return obj.to_dict()
    return str(obj)


def _clean(obj):
    # JSON strict: inf / nan deviennent des chaînes
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else repr(value)
    return obj


def write_json(path: PathLike, data: Dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = json.loads(json.dumps(data, default=to_serializable))
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(_clean(payload), f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write('\n')
    logger.debug(f"JSON report written: {path}")
    return path


def read_json(path: PathLike) -> Dict:
    path = Path(path)
    if not path.exists():
        raise ReportMissingError(f"Report not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return PIPELINE_CONFIG['float_format'] % float(value)
    return str(value)


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """CSV à en-tête, flottants en représentation exacte"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    logger.debug(f"CSV report written: {path}")
    return path


def _parse_cell(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_csv(path: PathLike) -> List[Dict]:
    path = Path(path)
    if not path.exists():
        raise ReportMissingError(f"Report not found: {path}")
    with open(path, 'r', encoding='utf-8', newline='') as f:
        return [{k: _parse_cell(v) for k, v in row.items()} for row in csv.DictReader(f)]


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            digest.update(block)
    return digest.hexdigest()


def sha256_json(data) -> str:
    """Empreinte d'un objet sérialisé sous forme canonique (clés triées, sans espaces)"""
    canonical = json.dumps(data, sort_keys=True, separators=(',', ':'), default=to_serializable)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


# === FICHIERS DE TRACÉ ===

def write_plot_data(path: PathLike, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Colonnes séparées par des espaces, en-tête '# col1 col2 ...' (en-tête seul si vide)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.asarray(list(rows), dtype=float).reshape(-1, len(columns))
    np.savetxt(path, data, fmt=PIPELINE_CONFIG['float_format'], header=' '.join(columns),
               comments='# ', encoding='utf-8')
    logger.debug(f"Plot data written: {path} ({data.shape[0]} rows)")
    return path


def read_plot_data(path: PathLike) -> Tuple[List[str], np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise ReportMissingError(f"Plot data not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        header = f.readline().lstrip('#').split()
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', UserWarning)
        data = np.loadtxt(path, comments='#', ndmin=2, encoding='utf-8')
    return header, data.reshape(-1, len(header))
