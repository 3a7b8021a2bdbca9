"""
Tangent-Disk Toolkit - Finite-Volume Oracle Module
"""

__version__ = "1.0.0"
