"""Community representation toolkit.

Builds three vector representations of text communities from raw comment
dumps -- text (tf-idf unigrams), user (tf-idf commenter counts), and
sentiment (induced polarity lexicons) -- and compares them via clustering,
rank correlation, and misalignment analyses.
"""

__version__ = "0.1.0"
