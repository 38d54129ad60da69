"""
Configuration module for the FabuLight-ASD toolkit
"""

from .config import Config

__all__ = ["Config"]
