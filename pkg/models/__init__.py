"""
Tangent-Disk Toolkit - Analytic Models Module
"""

__version__ = "1.0.0"
