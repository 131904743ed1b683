"""Offline rendering of cgflow CSV/JSON outputs into standard figures.

Rendering never recomputes science: every figure is a pure view of the
columns written by the experiment driver.  One module per figure kind:

  flow_theta   theta_n - 1 against scale, log-log, with the fitted slope
  homog_error  homogenization error ratios against scale
  conc_tails   empirical tails against concentration bounds
  fgf_cov      measured bump covariances against the closed-form kernel
"""

__version__ = "0.1.0"
