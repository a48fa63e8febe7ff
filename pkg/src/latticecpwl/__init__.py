"""Root-lattice decision boundaries: exact piece counting, folding transforms,
ReLU network synthesis, and Monte Carlo error-bound checks."""

__version__ = "0.1.0"
