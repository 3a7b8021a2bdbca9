"""
Tests for the Tangent-Disk Toolkit
"""
