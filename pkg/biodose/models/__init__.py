"""
Domain types shared by every biodose module
"""
