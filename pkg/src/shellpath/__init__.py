"""Hyperelastic Kirchhoff-Love shells on Catmull-Clark subdivision surfaces.

Modules
-------
mesh          quad control meshes, subdivision and patch stencils
basis         limit-surface basis functions and their derivatives
shell_core    kinematics, strains, constitutive response and variations
assembly      global residual, tangent, follower pressure and enclosed volume
continuation  Newton, arc length, stability checks and branch switching
cli           command line runs of the standard examples
"""

__version__ = "0.1.0"
