"""Software-simulated neutron beamline control system.

A deterministic virtual instrument: a real-time variable database, device
residents driven by a measurement script interpreter, watchdog-supervised
crash recovery, a network gateway with fault injection, and a spectrum
transfer codec with a transfer-cost model.
"""

__version__ = "0.1.0"
