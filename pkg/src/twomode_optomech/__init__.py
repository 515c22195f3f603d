"""
Two-mode cavity optomechanics: steady state and linear probe response
"""

__version__ = "0.1.0"
