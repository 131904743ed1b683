"""cgflow: coarse-grained diffusion matrices and renormalization flow on a lattice.

Subpackages follow the pipeline order:

  matalg     exact 2d x 2d block-matrix algebra (ellipticity ratios, geometric means)
  grids      triadic cube bookkeeping and adapted rectangles
  fields     seedable random coefficient-field samplers
  cellsolve  discrete variational engine for the coarse-grained matrices A(U)
  besov      multiscale Besov seminorms and functional-inequality checks
  orlicz     tail-bound function calculus and concentration bounds
  renorm     Monte Carlo renormalization-flow tracking
  homogcheck per-sample homogenization error measurement
  expcli     command line driver
"""

__version__ = "0.1.0"
