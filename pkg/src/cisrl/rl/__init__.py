# rl — agent, rewards, the training loop
