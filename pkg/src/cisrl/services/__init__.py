# services — supervisor and experiment orchestration
