# Package metadata read by packaging tools, not by the code
from semiclab import __author__, __description__  # noqa: F401

__author__
__description__
