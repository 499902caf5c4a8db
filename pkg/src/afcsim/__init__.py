"""Simulation of atomic-frequency-comb photon-echo storage of weak light pulses.

Layers, bottom to top: ``spectral_medium`` (absorption profiles),
``comb_preparation`` (optical pumping), ``field_propagation`` (linear
propagation and echoes), ``photon_detection`` (counting statistics),
``experiments`` (the storage experiments) and ``scenario``/``cli`` (files
and the ``afc-sim`` command).
"""

from .comb_preparation import *  # noqa: F401,F403
from .experiments import *  # noqa: F401,F403
from .field_propagation import *  # noqa: F401,F403
from .fitting import *  # noqa: F401,F403
from .photon_detection import *  # noqa: F401,F403
from .spectral_medium import *  # noqa: F401,F403

__version__ = "0.1.0"
