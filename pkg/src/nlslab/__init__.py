"""nlslab: pseudospectral laboratory for NLS on R^d x T.

Subpackages cover exact exponent feasibility (`exponents`), the spectral
field and norm engine (`field`), split-step time integration (`integrator`),
interaction-Morawetz diagnostics (`morawetz`), scattering probes
(`scattering`), and experiment orchestration (`cli`).
"""

__version__ = "0.1.0"
