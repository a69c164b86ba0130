"""Postselected weak measurements with bosonic pointers.

Modules
-------
fock       truncated Fock-space pointer states, quadratures, p-densities
protocol   weak coupling, postselection, weak values
metrology  SNR and Fisher-information figures of merit and their optima
mc         Monte Carlo runs with AMR and MLE estimators
cli        command-line front end (``wvalab`` / ``python3 -m wvalab``)
"""

__version__ = "0.1.0"

from . import errors, fock, mc, metrology, protocol  # noqa: E402

__all__ = ["__version__", "errors", "fock", "mc", "metrology", "protocol"]
