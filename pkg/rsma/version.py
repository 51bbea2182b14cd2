# -*- coding: utf-8 -*-
"""Package declaring rsma toolkit version."""
__version__ = "0.3.0"
