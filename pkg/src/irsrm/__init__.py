"""Module selection and max-min SINR optimization for IRS-aided two-hop
networks."""
__version__ = "0.1.0"
