"""Check-worthiness triage toolkit: corpus handling, subword tokenizers, a
small numpy transformer classifier, back-translation upsampling, score
ranking and shared-task style evaluation."""

__version__ = "0.1.0"
