"""Multi-resolution rescored ByteTrack post-processing engine."""
