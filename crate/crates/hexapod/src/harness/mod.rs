//! Scenario runner and simulated plant (under construction).
