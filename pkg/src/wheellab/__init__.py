"""wheellab: a desk-scale synthetic-data laboratory for hands-on-wheel
detection — procedural scene generation with geometric auto-labeling, a
small dual-head classifier trained from scratch, domain-gap fine-tuning
experiments, and a human-in-the-loop triage service."""

__version__ = "0.1.0"
