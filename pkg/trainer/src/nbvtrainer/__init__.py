"""Training side of the nbvsim direction classifier.

Reads dataset directories produced by the simulator, trains the
reference CNN with torch, and exports EXHW weight files plus
forward-pass fixtures that the simulator's numpy inference path loads
bit-exactly.  The two packages share only those on-disk formats.
"""
