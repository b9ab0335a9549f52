"""Registry of explanation technique identifiers.

Kept separate so the typology module can validate technique references
without importing the explainer implementations.
"""

TECHNIQUES = frozenset({
    "exact_shapley",       # coalition-enumeration feature attribution
    "sampling_shapley",    # permutation-sampled feature attribution
    "grid_counterfactual", # discretized minimal-change search
    "gower_knn",           # mixed-type nearest neighbours
    "greedy_anchor",       # precision-guided rule construction
    "histogram_stats",     # dataset statistics
    "template_nlg",        # textual annotation generator
})
