"""
Hiérarchie d'exceptions de PlateDoubling
Chaque erreur porte un code de sortie utilisé par la CLI (2 = validation, 3 = étape numérique)
"""
from typing import Optional


class PlateDoublingError(Exception):
    """Erreur de base"""
    exit_code = 3


class ConfigValidationError(PlateDoublingError):
    """Configuration invalide, détectée avant tout calcul"""
    exit_code = 2


class ExpressionError(ConfigValidationError):
    """Expression hors de la grammaire autorisée"""


class ReportMissingError(ConfigValidationError):
    """Fichier de rapport absent"""


class ParameterError(PlateDoublingError, ValueError):
    """Précondition d'une opération violée"""
    exit_code = 2


class NumericalStageError(PlateDoublingError):
    """Échec d'une étape numérique, avec le résidu qui l'a déclenché"""

    def __init__(self, message: str, stage: Optional[str] = None,
                 residual: Optional[float] = None):
        super().__init__(message)
        self.stage = stage
        self.residual = residual


class MaterialError(NumericalStageError):
    pass


class GeometryError(NumericalStageError):
    pass


class AssemblyError(NumericalStageError):
    pass


class SolverError(NumericalStageError):
    pass


class ChartError(NumericalStageError):
    pass


class DomainError(NumericalStageError):
    pass
