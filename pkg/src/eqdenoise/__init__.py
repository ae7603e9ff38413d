"""Rotation-equivariant self-supervised image denoising on NumPy.

Subpackages of interest: :mod:`eqdenoise.tensor` (autodiff), :mod:`eqdenoise.steerable`
and :mod:`eqdenoise.groups` (equivariant layers), :mod:`eqdenoise.resample`,
:mod:`eqdenoise.models`, :mod:`eqdenoise.selfsup`, :mod:`eqdenoise.harness`.
"""

__version__ = "0.1.0"
