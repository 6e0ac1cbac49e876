# cisrl — invariant sets first, reward second
