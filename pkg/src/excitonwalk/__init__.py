"""Single-excitation transport on chromophore networks: FMO, dephased chains, quantum-walk limits."""

__version__ = "0.1.0"
