"""
Grid Field - Champ scalaire discret sur grille rectangulaire uniforme
Format de fichier, interpolation par splines et différences finies d'ordre arbitraire
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, Iterable, Optional, Tuple, Union

import numpy as np
from scipy.interpolate import RectBivariateSpline

from core.errors import ConfigValidationError, ParameterError

logger = logging.getLogger(__name__)

# === DIFFÉRENCES FINIES ===

@lru_cache(maxsize=256)
def _cached_weights(offsets: Tuple[int, ...], order: int) -> np.ndarray:
    """Récurrence de Fornberg en x0 = 0; c[j, k] poids du noeud j pour la dérivée k"""
    x = np.asarray(offsets, dtype=float)
    n = x.size
    c = np.zeros((n, order + 1))
    c[0, 0] = 1.0
    c1, c4 = 1.0, x[0]
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, x[i]
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def fd_weights(offsets: Iterable[int], order: int) -> np.ndarray:
    """
    Poids de différences finies pour la dérivée d'ordre `order`

    Args:
        offsets: positions du stencil en multiples du pas
        order: ordre de la dérivée

    Returns:
        Poids w tels que f^(order)(0) ~ sum(w * f(offsets * h)) / h^order
    """
    offsets = tuple(int(o) for o in offsets)
    if len(offsets) <= order:
        raise ParameterError(f"Stencil of {len(offsets)} points cannot resolve order {order}")
    if len(set(offsets)) != len(offsets):
        raise ParameterError(f"Stencil offsets must be distinct, got {offsets}")
    return _cached_weights(offsets, order)


def stencil_sizes(order: int, accuracy: int) -> Tuple[int, int]:
    """Demi-largeur centrée et largeur des stencils unilatéraux"""
    half = (order - 1) // 2 + (accuracy + 1) // 2
    edge_width = max(2 * half + 1, order + accuracy)
    return half, edge_width


def derivative(values: np.ndarray, h: float, axis: int = 0, order: int = 1,
               accuracy: int = 2) -> np.ndarray:
    """
    Dérivée par différences finies le long d'un axe

    Stencils centrés à l'intérieur, unilatéraux de même précision près des bords.
    """
    if order == 0:
        return np.array(values, dtype=float, copy=True)

    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    n = v.shape[0]
    half, edge_width = stencil_sizes(order, accuracy)
    if n < edge_width:
        raise ParameterError(
            f"Axis of {n} nodes too short for derivative order {order} at accuracy {accuracy}"
        )

    out = np.empty_like(v)
    weights = fd_weights(range(-half, half + 1), order)
    interior = np.zeros_like(v[half:n - half])
    for k, wk in enumerate(weights):
        if wk != 0.0:
            interior += wk * v[k:n - 2 * half + k]
    out[half:n - half] = interior

    for i in list(range(half)) + list(range(n - half, n)):
        start = min(max(i - edge_width // 2, 0), n - edge_width)
        idx = np.arange(start, start + edge_width)
        w_edge = fd_weights(idx - i, order)
        out[i] = np.tensordot(w_edge, v[idx], axes=(0, 0))

    return np.moveaxis(out, 0, axis) / h ** order


def partial(values: np.ndarray, hx: float, hy: float, nx: int = 0, ny: int = 0,
            accuracy: int = 2) -> np.ndarray:
    """Dérivée partielle d^(nx+ny) / dx^nx dy^ny sur un tableau [ix, iy]"""
    out = np.asarray(values, dtype=float)
    if nx:
        out = derivative(out, hx, axis=0, order=nx, accuracy=accuracy)
    if ny:
        out = derivative(out, hy, axis=1, order=ny, accuracy=accuracy)
    return out


def gradient(values, hx, hy, accuracy=2) -> Tuple[np.ndarray, np.ndarray]:
    return (partial(values, hx, hy, 1, 0, accuracy),
            partial(values, hx, hy, 0, 1, accuracy))


def laplacian(values, hx, hy, accuracy=2) -> np.ndarray:
    return partial(values, hx, hy, 2, 0, accuracy) + partial(values, hx, hy, 0, 2, accuracy)


def bilaplacian(values, hx, hy, accuracy=2) -> np.ndarray:
    return (partial(values, hx, hy, 4, 0, accuracy)
            + 2.0 * partial(values, hx, hy, 2, 2, accuracy)
            + partial(values, hx, hy, 0, 4, accuracy))


# === CHAMP SUR GRILLE ===

def uniform_axis(start: float, stop: float, n: int) -> np.ndarray:
    return np.linspace(float(start), float(stop), int(n))


@dataclass(frozen=True, eq=False)
class GridField:
    """Champ scalaire sur grille uniforme, valeurs indexées [ix, iy]"""
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    mask: Optional[np.ndarray] = None
    name: str = 'field'
    _splines: Dict[int, RectBivariateSpline] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'values', values)

        if values.shape != (x.size, y.size):
            raise ParameterError(
                f"{self.name}: values shape {values.shape} does not match axes ({x.size}, {y.size})"
            )
        for label, axis in (('x', x), ('y', y)):
            if axis.size < 2:
                raise ParameterError(f"{self.name}: axis {label} needs at least 2 nodes")
            steps = np.diff(axis)
            if np.any(steps <= 0):
                raise ParameterError(f"{self.name}: axis {label} spacing must be positive")
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
                raise ParameterError(f"{self.name}: axis {label} is not uniform")

        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != values.shape:
                raise ParameterError(f"{self.name}: mask shape {mask.shape} != {values.shape}")
            object.__setattr__(self, 'mask', mask)
            checked = values[mask]
        else:
            checked = values
        if not np.all(np.isfinite(checked)):
            bad = np.argwhere(~np.isfinite(values) & (self.mask if self.mask is not None else True))
            raise ParameterError(f"{self.name}: non-finite value at node {tuple(bad[0])}")

    # --- métadonnées ---
    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def hx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def hy(self) -> float:
        return float(self.y[1] - self.y[0])

    @property
    def extent(self) -> Tuple[float, float, float, float]:
        return float(self.x[0]), float(self.x[-1]), float(self.y[0]), float(self.y[-1])

    def meshgrid(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing='ij')

    # --- constructeurs ---
    @classmethod
    def from_function(cls, func: Callable, x: np.ndarray, y: np.ndarray,
                      mask: Optional[np.ndarray] = None, name: str = 'field') -> 'GridField':
        xx, yy = np.meshgrid(x, y, indexing='ij')
        values = np.asarray(func(xx, yy), dtype=float)
        values = np.broadcast_to(values, xx.shape).copy()
        return cls(x, y, values, mask, name)

    def with_values(self, values: np.ndarray, name: Optional[str] = None,
                    mask: Union[np.ndarray, None, bool] = True) -> 'GridField':
        """Nouveau champ sur la même grille (masque conservé par défaut)"""
        new_mask = self.mask if mask is True else (None if mask is False else mask)
        return GridField(self.x, self.y, values, new_mask, name or self.name)

    # --- interpolation ---
    def spline(self, order: int = 3) -> RectBivariateSpline:
        if order not in self._splines:
            k = min(order, self.x.size - 1, self.y.size - 1)
            self._splines[order] = RectBivariateSpline(self.x, self.y, self.values, kx=k, ky=k, s=0)
        return self._splines[order]

    def contains(self, xq, yq, tol: float = 1e-12) -> np.ndarray:
        x0, x1, y0, y1 = self.extent
        xq = np.asarray(xq, dtype=float)
        yq = np.asarray(yq, dtype=float)
        return (xq >= x0 - tol) & (xq <= x1 + tol) & (yq >= y0 - tol) & (yq <= y1 + tol)

    def sample(self, xq, yq, order: int = 3, dx: int = 0, dy: int = 0) -> np.ndarray:
        """Évalue l'interpolant spline (ou ses dérivées) en des points arbitraires"""
        xq = np.asarray(xq, dtype=float)
        yq = np.asarray(yq, dtype=float)
        shape = np.broadcast(xq, yq).shape
        xb, yb = np.broadcast_to(xq, shape).ravel(), np.broadcast_to(yq, shape).ravel()
        return self.spline(order).ev(xb, yb, dx=dx, dy=dy).reshape(shape)

    # --- différences finies ---
    def partial(self, nx: int = 0, ny: int = 0, accuracy: int = 2) -> np.ndarray:
        return partial(self.values, self.hx, self.hy, nx, ny, accuracy)

    def laplacian(self, accuracy: int = 2) -> np.ndarray:
        return laplacian(self.values, self.hx, self.hy, accuracy)

    def bilaplacian(self, accuracy: int = 2) -> np.ndarray:
        return bilaplacian(self.values, self.hx, self.hy, accuracy)

    # --- fichiers ---
    def save(self, path: Union[str, Path]) -> Path:
        """Écrit l'en-tête texte puis la charge utile float64 (ordre ligne) et le masque"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        x0, x1, y0, y1 = self.extent
        mask_flag = 0 if self.mask is None else 1
        nx, ny = self.shape
        header = f"{nx} {ny} {x0!r} {x1!r} {y0!r} {y1!r} {mask_flag}\n"
        with open(path, 'wb') as f:
            f.write(header.encode('ascii'))
            f.write(np.ascontiguousarray(self.values, dtype='<f8').tobytes(order='C'))
            if self.mask is not None:
                f.write(np.ascontiguousarray(self.mask, dtype=np.uint8).tobytes(order='C'))
        logger.debug(f"Grid field '{self.name}' saved to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path], name: Optional[str] = None) -> 'GridField':
        path = Path(path)
        if not path.exists():
            raise ConfigValidationError(f"Grid field file not found: {path}")
        raw = path.read_bytes()
        newline = raw.find(b'\n')
        if newline < 0:
            raise ConfigValidationError(f"Malformed grid field header in {path}")
        try:
            tokens = raw[:newline].decode('ascii').split()
            nx, ny = int(tokens[0]), int(tokens[1])
            x0, x1, y0, y1 = (float(t) for t in tokens[2:6])
            mask_flag = int(tokens[6])
        except (ValueError, IndexError, UnicodeDecodeError) as e:
            raise ConfigValidationError(f"Malformed grid field header in {path}: {e}") from e

        payload = raw[newline + 1:]
        n = nx * ny
        expected = 8 * n + (n if mask_flag else 0)
        if len(payload) != expected:
            raise ConfigValidationError(
                f"Grid field {path}: payload has {len(payload)} bytes, expected {expected}"
            )
        values = np.frombuffer(payload, dtype='<f8', count=n).reshape(nx, ny).copy()
        mask = None
        if mask_flag:
            mask = np.frombuffer(payload, dtype=np.uint8, count=n, offset=8 * n).reshape(nx, ny) > 0
        return cls(uniform_axis(x0, x1, nx), uniform_axis(y0, y1, ny), values, mask,
                   name or path.stem)
