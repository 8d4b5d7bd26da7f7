"""embrich: embedding-based feature enrichment and ablation toolkit for
tabular classification.

Pipeline: serialize rows to text, embed with a pluggable backend, reduce
with PCA, select the most informative dimensions with a Random Forest,
concatenate with the baseline features, and quantify the contribution via
stratified cross-validation and Bonferroni-corrected paired t-tests.
"""

__version__ = "0.1.0"
