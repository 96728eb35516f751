"""Joint domain classification, intent classification and slot tagging with a shared BiLSTM encoder."""

__version__ = "0.1.0"
