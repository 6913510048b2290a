"""xfpt: extreme first-passage hitting probabilities for many diffusive searchers.

Which of several targets does the *fastest* of ``N`` searchers hit?  The
package tabulates single-searcher hitting-time laws (series solutions and a
Crank-Nicolson solver), turns them into ``P(K_N = k)`` by Stieltjes
quadrature, evaluates the closed-form large-``N`` laws, checks both by Monte
Carlo, and computes the geodesic distances that bound the decay exponent.
"""

__version__ = "0.1.0"

from .tabulated import TabulatedDistribution  # noqa: E402
from .scenario import ScenarioSpec  # noqa: E402

__all__ = ["TabulatedDistribution", "ScenarioSpec", "__version__"]
