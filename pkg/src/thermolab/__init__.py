"""thermolab: a numerical laboratory for thermostat flows on surfaces.

Conformal torus and disk models (plus synthetic constant-curvature windows)
carry a generalized isokinetic thermostat flow; the package integrates
orbits and Jacobi fields, checks energy-type integral identities by
quadrature, probes the attenuated ray transform of function/1-form pairs,
and evaluates hyperbolicity and cohomological-equation diagnostics.
"""

__version__ = "0.1.0"

from .errors import ThermolabError  # noqa: F401
