"""Run ledger (optional SQLAlchemy store)"""
