"""Tools for evaluating speaker embedding extractors in diarisation settings.

The package covers the full offline pipeline: parsing RTTM speaker
timelines, cropping sessions into typed fixed-length segments, composing
within-session verification trial protocols, augmenting training
mini-batches with overlapped-speech and speaker-change bursts, and
scoring (EER, DER, JER, Pearson correlation).
"""

__version__ = "0.1.0"
