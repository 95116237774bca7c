"""Coupling and mixing laboratory for a randomly forced Ginzburg-Landau equation.

The package splits into noise generation (:mod:`redmix.haar`,
:mod:`redmix.noise`), dynamics (:mod:`redmix.dynamics`), the coupling
construction (:mod:`redmix.coupling`), statistical diagnostics
(:mod:`redmix.diagnostics`) and the command-line front end
(:mod:`redmix.config`, :mod:`redmix.cli`).
"""

__version__ = "0.1.0"
