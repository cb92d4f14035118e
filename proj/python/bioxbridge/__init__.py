"""Cross-modality model reuse with compact low-rank bridges.

A frozen old-modality encoder and task head keep serving predictions on a new
modality: a small bridge maps the frozen new-modality encoder's intermediate
representation into the old model's layer space, and only the bridge trains.
"""

from ._core import *  # noqa: F401,F403

__version__ = "0.1.0"
