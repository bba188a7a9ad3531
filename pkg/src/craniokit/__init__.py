"""Head-mesh cohort augmentation, disentangled latent analysis, and surgical
procedure ranking."""

__version__ = "0.1.0"
