"""lumactl: prompt-driven local low-light image enhancement.

The package splits an image into illumination and reflectance, parses a
plain-English brightening/darkening instruction, builds a spatial adjustment
map for the targeted region, and re-renders the image either deterministically
or through a small conditioned-diffusion demonstrator. A CLI and an HTTP
facade sit on top of the library.
"""

__version__ = "0.1.0"
