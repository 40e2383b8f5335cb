"""chatscreen: a from-scratch LSTM pipeline that screens chat logs.

A two-layer LSTM language model supplies sentence vectors (its top hidden
state at a sentence's final token); a second LSTM classifies conversations
over those vectors; a shallow averaged-bag-of-features model scores each
author over (predator, victim, normal); an author is flagged only when
both classifiers agree.
"""

__version__ = "0.1.0"
