"""Multi-robot search-and-rescue simulation with fuzzy local planning and a supervisory MPC."""
from ._accel import BACKEND

__version__ = "0.1.0"
