"""Author name disambiguation from co-author and citation links.

Modules: ``corpus`` (records, blocking, profiles), ``similarity`` (pair
terms), ``clustering`` (two-step clustering), ``metrics`` (precision and
h-index recall), ``optimizer`` (parameter search and ablation), ``hmodel``
(h-index distribution model), ``synth`` (synthetic corpora) and ``cli``.
"""
from __future__ import annotations

__version__ = "0.1.0"
