"""
Numerical helpers, data ingestion and run manifests
"""
