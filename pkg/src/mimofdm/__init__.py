"""Link-level MIMO-OFDM simulator with classical and swarm-based detectors."""

__version__ = "0.1.0"
