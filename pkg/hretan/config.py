"""Module-level defaults shared by the library and the command line."""

# Dataset CSV
CLASS_COLUMN = "class"
BINARY_VALUES = ("0", "1")

# Evaluation
DEFAULT_FOLDS = 10
DEFAULT_SEED = 1
DEFAULT_JOBS = 1

# Add-one (Laplace) pseudo-count used by CMI and CPT estimates
SMOOTHING = 1.0

# Edge weights equal to this many decimals are ordered as ties
WEIGHT_DECIMALS = 12

# Wilcoxon signed-rank
MIN_WILCOXON_N = 6
EXACT_WILCOXON_MAX_N = 15

# Output
DISPLAY_DECIMALS = 1
REPORT_FORMAT_VERSION = "1.0"

# Synthetic data: seed-positive base rate and the probability a planted
# feature fires for its preferred class at full strength
SYNTH_BASE_RATE = 0.1
SYNTH_SIGNAL_RATE = 0.6
SYNTH_MINORITY_LABEL = "pro"
SYNTH_MAJORITY_LABEL = "anti"
