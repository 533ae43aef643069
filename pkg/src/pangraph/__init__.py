"""Human-centric visual token graphs for multimodal action recognition."""
