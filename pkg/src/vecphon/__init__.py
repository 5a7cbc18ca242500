"""Continuous underlying forms for morphemes with a recurrent speller.

The package trains character-level word models whose only morphological
knowledge is one real vector per morpheme. A word's underlying form is
assembled from the vectors of its morphemes (by averaging, by per-step
attention, or implicitly in a mixture over morphemes) and a recurrent
decoder spells out the surface string one character at a time.
"""

__version__ = "0.1.0"
