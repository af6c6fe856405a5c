import { serveStdio, serveTcp } from "./server.js";

function parseArgs(argv: string[]) {
  let stub = false;
  let tcpPort: number | null = null;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--stub") {
      stub = true;
    } else if (arg === "--tcp") {
      const next = argv[++i];
      tcpPort = Number.parseInt(next ?? "", 10);
      if (!Number.isFinite(tcpPort)) {
        console.error("--tcp needs a port number");
        process.exit(1);
      }
    } else {
      console.error(`unknown flag ${arg}`);
      process.exit(1);
    }
  }
  return { stub, tcpPort };
}

const { stub, tcpPort } = parseArgs(process.argv.slice(2));
const mode = stub ? ("stub" as const) : ("real" as const);

if (tcpPort !== null) {
  serveTcp(tcpPort, mode);
  console.error(`sidecar listening on tcp :${tcpPort} (${mode} mode)`);
} else {
  console.error(`sidecar ready on stdio (${mode} mode)`);
  serveStdio(mode).then(() => process.exit(0));
}
