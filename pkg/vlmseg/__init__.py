__author__ = "vlmseg contributors"
__email__ = "any@example.com"
__version__ = "0.1"
