"""vekit: SNLI-VE dataset toolkit and attention-based visual entailment models."""

__version__ = "0.1.0"
