"""
Tangent-Disk Toolkit - Geometry Module
"""

__version__ = "1.0.0"
