#!/usr/bin/env python3
"""
disbayes local server runner
Serves graph analysis and experiment runs over HTTP
"""

import logging

import uvicorn

from app.config import Config


def main():
    """Run the disbayes API server"""
    logging.basicConfig(level=getattr(logging, Config.LOG_LEVEL, logging.INFO))
    print("🚀 Starting disbayes server...")
    print("=" * 50)
    print("• Graph analysis: Metropolis weights, nu, delta and deviation bounds")
    print("• Experiments: simulate, bvm, contraction, timevary, coverage, lln-clt")
    print("=" * 50)

    Config.validate()
    port = Config.PORT
    host = Config.HOST

    print(f"\n🌐 Server will be available at: http://{host}:{port}")
    print(f"❤️  Health endpoint: http://{host}:{port}/api/v1/health")
    print(f"📈 Progress endpoint: http://{host}:{port}/api/v1/progress")
    print("\nPress Ctrl+C to stop the server")
    print("=" * 50)

    try:
        uvicorn.run(
            "app.main:app",
            host=host,
            port=port,
            reload=Config.DEBUG,
            log_level="info",
        )
    except KeyboardInterrupt:
        print("\n🛑 Server stopped by user")
    except Exception as e:
        print(f"❌ Error starting server: {str(e)}")


if __name__ == "__main__":
    main()
