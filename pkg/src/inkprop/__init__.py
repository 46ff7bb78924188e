"""inkprop: paint-bucket colorization for line-art animation.

Propagates a painter's per-segment colors from one colorized reference
frame to the rest of a clip: coarse optical-flow color warping seeds a
learned inclusion matcher that assigns every line-enclosed target segment
to a reference region, with a classical Hu-moment matcher as the
non-learned baseline.
"""

__version__ = "0.1.0"
