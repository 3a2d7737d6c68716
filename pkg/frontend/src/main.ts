import { ApiClient } from "./api.js";
import { ConsoleStore } from "./state.js";
import { mountConsole } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? `${window.location.protocol}//${window.location.hostname}:8620`;

const store = new ConsoleStore(new ApiClient(baseUrl, ""));
mountConsole(store);
