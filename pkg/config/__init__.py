# Configuration files