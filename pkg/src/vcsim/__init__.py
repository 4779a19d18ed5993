"""vcsim: a desk-scale simulator of a vehicular-cloud video recognition pipeline.

Simulated vehicles capture synthetic geotagged frames, an RSU deduplicates
and dispatches them to cloud workers that extract plates, face markers and
GPS fixes in parallel, and a load-balanced gateway matches detections
against an operator watchlist — all over a calibrated network model that
can run on a deterministic virtual clock or paced against wall time.
"""

__version__ = "0.1.0"
