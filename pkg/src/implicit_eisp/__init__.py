"""Electromagnetic inverse scattering with implicit neural representations.

Modules: ``numerics`` (special functions, dense complex algebra), ``system``
(geometry, grids, config, RNG), ``physics`` (MoM forward model),
``scenes`` (phantoms), ``inr`` (coordinate MLPs), ``inversion`` (training,
BP baseline, rendering), ``metrics`` and ``io``.
"""

__version__ = "0.1.0"
