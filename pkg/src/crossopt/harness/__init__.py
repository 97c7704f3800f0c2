"""Workloads, scenarios, metrics, routing and reports."""
