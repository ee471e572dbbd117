"""Penalized constrained-BSDE / variational inequality laboratory."""

try:
    from pvi._pvi import *  # installed wheel layout
    from pvi._pvi import __doc__ as _doc
except ImportError:  # in-tree builds put _pvi on PYTHONPATH directly
    from _pvi import *
    from _pvi import __doc__ as _doc

__doc__ = _doc
