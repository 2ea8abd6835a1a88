"""
hrldx CLI commands
"""
