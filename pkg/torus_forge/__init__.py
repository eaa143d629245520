"""
torus_forge — Motor numérico de toros invariantes KAM para perturbaciones Gevrey
"""
__version__ = "0.3.0"
