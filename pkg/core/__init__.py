"""
PlateDoubling Core Module
Vérification numérique du doublement au bord pour les plaques de Kirchhoff-Love appuyées
"""

__version__ = "1.0.0"
__author__ = "PlateDoubling Team"
