# core — the math that has to be right
