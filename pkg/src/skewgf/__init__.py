"""Block-isotropic skew-symmetric Gaussian fields and their quadratic models."""
