"""Translating curve for curve diffusion flow.

Shooting on the angle equation ``theta''' = -cos(theta)`` finds the profile
of a curve that moves by pure vertical translation.  The package also checks
the qualitative estimates behind the construction and runs a discrete
curve-diffusion simulator that confirms the translation.
"""

__version__ = "0.1.0"
