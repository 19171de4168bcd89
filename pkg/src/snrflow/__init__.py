"""snrflow: linear-attention flow matching with log-SNR expert routing"""

__version__ = "0.3.0"

__all__ = ["__version__"]
