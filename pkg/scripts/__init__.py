"""
Tangent-Disk Toolkit - Command-Line Scripts
"""

__version__ = "1.0.0"
