"""LeNet-5 slice classifier for 4D neuroimaging volumes, written on numpy."""
__version__ = "0.1.0"
