"""Numerical toolkit for gauge identification of magnetic Schrodinger operators
on planar domains from Cauchy data.

The package couples complex-analytic operators on uniform grids (Cauchy
transforms, Dirac systems, complex geometric optics solutions) with a P2
finite element forward solver on disks and annuli.
"""

__version__ = "0.1.0"
