"""Cell-free massive MIMO ISAC simulator.

Distributed multi-target detection with joint communication/sensing
power allocation: scenario generation, channel modeling, AP mode
selection, LP-MMSE/MRT beamforming, SINR models, convex-concave power
optimization, MAPRT detection, and an experiment harness with a CLI.
"""

__version__ = "0.1.0"
