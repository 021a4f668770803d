"""Descrambler groups for reading the inner signals of trained networks.

Submodules: ``core`` (containers, I/O), ``spectral`` (DFT and derivative
matrices), ``cayley`` (SO(d) parameterisation and functionals), ``lbfgs``,
``descramble`` (wiretaps and the optimiser), ``netlab`` (training),
``deer`` (physics and synthetic data), ``analysis``, ``replica`` (DSP
replica of a DEER network) and ``cli``.
"""

__version__ = "0.1.0"
