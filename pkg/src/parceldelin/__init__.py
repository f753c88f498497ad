"""Farm parcel delineation toolkit.

Turns cadastral vector data plus multi-date satellite tiles into training
datasets, trains spatial and spatio-temporal U-Net variants to segment
parcel boundaries and areas, and evaluates them with Dice/accuracy.
"""

__version__ = "0.1.0"
